"""Experiment runners behind each CLI subcommand.

Every runner takes a validated ``ExperimentConfig`` and returns in-memory
``Artifacts``; nothing touches the disk until the whole run succeeds.
Independent work units (lambda points, boundary choices, chains) are
dispatched to a process pool, each with a seed derived from the master seed
and a unit label, so results do not depend on the worker count.
"""
from __future__ import annotations

import hashlib
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from fslab import saw, spectral, stats, walks, wulff
from fslab.errors import ConvexityError, NonSmoothError, SizeError
from fslab.harness.io import Artifacts


# ---------------------------------------------------------------------------
# seeds and workers
# ---------------------------------------------------------------------------


def derive_seed(master: int, unit: str) -> int:
    """64-bit seed from the master seed and a unit label."""
    digest = hashlib.sha256(f"{master}/{unit}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def resolve_workers(value: int | None = None) -> int:
    if value is None:
        env = os.environ.get("FSLAB_WORKERS")
        value = int(env) if env else 1
    if value < 1:
        raise ValueError("worker count must be >= 1")
    return value


def parallel_map(fn, items, workers: int) -> list:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# ordered-walk convergence to the Ferrari-Spohn limit
# ---------------------------------------------------------------------------


@dataclass
class ConvergenceRow:
    lam: float
    H: float
    N: int
    M: int
    ks: float  # lattice-corrected KS of the top path, boundary 0
    ks_raw: float  # atoms at x/H, boundary 0
    ks_exact: float  # exact DP marginal (n >= 2) or equal to ks (n = 1)
    ks_boundary: float  # lattice-corrected KS with top boundary at ceil(C H)
    samples: int
    runtime: float = 0.0

    @property
    def spread(self) -> float:
        return abs(self.ks_boundary - self.ks)


@dataclass
class ConvergenceReport:
    n: int
    rows: list
    period: int
    sigma2: float
    boundary_C: float

    @property
    def ks(self) -> np.ndarray:
        return np.array([r.ks for r in self.rows])

    @property
    def strictly_decreasing(self) -> bool:
        k = self.ks
        return bool(np.all(np.diff(k) < 0))

    def improvements(self) -> np.ndarray:
        """KS gain from each lambda to the next finer one (last row reuses the previous gain)."""
        k = self.ks
        if len(k) < 2:
            return np.full(len(k), np.nan)
        gain = k[:-1] - k[1:]
        return np.append(gain, gain[-1])

    def uniformity(self) -> np.ndarray:
        """Per row: boundary spread below twice the finer-lambda improvement."""
        gains = self.improvements()
        return np.array([r.spread < 2.0 * g for r, g in zip(self.rows, gains)])

    def header(self) -> list:
        return ["lambda", "H", "N", "M", "ks", "ks_raw", "ks_exact", "ks_boundary", "spread",
                "samples", "uniform"]

    @property
    def probed(self) -> bool:
        return not any(np.isnan(r.spread) for r in self.rows)

    def table(self) -> list:
        uni = self.uniformity() if self.probed else [None] * len(self.rows)
        return [[r.lam, r.H, r.N, r.M, r.ks, r.ks_raw, r.ks_exact, r.ks_boundary, r.spread,
                 r.samples, None if u is None else bool(u)] for r, u in zip(self.rows, uni)]

    def verdicts(self) -> dict:
        return {
            "strictly_decreasing": self.strictly_decreasing,
            "final_ks": float(self.ks[-1]),
            "boundary_uniform": bool(np.all(self.uniformity())) if self.probed else None,
        }


_REFERENCE_CACHE: dict = {}


def fs_reference(n: int, alpha: float, sigma2: float, R: float, h: float):
    """Top-path CDF of the Delta^2 density for ``q(r) = r^alpha``."""
    key = (n, alpha, sigma2, R, h)
    if key not in _REFERENCE_CACHE:
        pot = spectral.Potential.power(1.0, alpha, math.sqrt(sigma2))
        basis = spectral.solve_spectrum(pot, R, h, max(n, 1))
        _REFERENCE_CACHE[key] = stats.TabulatedCDF(basis.grid, spectral.marginal_cdfs(basis, n)[0])
    return _REFERENCE_CACHE[key]


def _fs_unit(job: dict) -> dict:
    start = time.perf_counter()
    spec = job["spec"]
    if job["mode"] == "exact":
        if spec.n == 1:
            p = walks.marginal_height(spec, 0)
        else:
            p = walks.path_marginals(walks.ordered_marginal(spec, 0, job["budget"]))[0]
        samples = 0
    else:
        hist = walks.mcmc_histograms(spec, job["seed"], job["sweeps"], t=0, thin=job["thin"],
                                     burn_in=job["burn_in"])
        p = hist.counts[0].astype(float)
        samples = hist.samples
    return {"key": job["key"], "p": p, "samples": samples, "runtime": time.perf_counter() - start}


def verify_fs_experiment(n: int, lambdas, kernel: walks.StepKernel, alpha: float = 1.0,
                         N_factor: float = 10.0, boundary_C: float = 1.0,
                         probe_boundary: bool = True, R: float = 20.0, h: float = 2e-3,
                         sweeps: int = 10**6, thin: int = 1, burn_in: int = 10**4,
                         chains: int = 1, exact_budget: int = 10**8,
                         max_updates: int = 10**11, seed: int = 0,
                         workers: int = 1) -> ConvergenceReport:
    """Compare the rescaled time-0 top-path law with its Ferrari-Spohn limit over a lambda grid.

    For ``n = 1`` the law is exact (transfer recursion).  For ``n >= 2`` it
    is estimated by heat-bath chains; the exact ordered DP is reported
    alongside whenever it fits ``exact_budget``.  Budgets are checked for
    every lambda before any work starts.
    """
    period = kernel.period
    sigma2 = kernel.variance
    jobs = []
    meta = []
    for lam in lambdas:
        tilt = walks.TiltPotential.power_law(lam, alpha)
        H = tilt.h_lambda
        N = int(math.ceil(N_factor * H * H))
        bounds = [("zero", (0,) * n)]
        if probe_boundary:
            bounds.append(("raised", (int(math.ceil(boundary_C * H)),) + (0,) * (n - 1)))
        M = max(walks.default_cutoff(tilt), *bounds[-1][1])
        meta.append((lam, H, N, M, dict(bounds)))
        for label, u in bounds:
            spec = walks.EnsembleSpec(n, N, u, u, kernel, tilt, M)
            exact_cost = (M + 1) ** n * (2 * N + 1)
            if n == 1:
                if exact_cost > exact_budget:
                    raise SizeError(f"lambda={lam}: exact cost {exact_cost} exceeds budget")
                jobs.append({"key": (lam, label, "exact"), "spec": spec, "mode": "exact",
                             "budget": exact_budget})
                continue
            updates = sweeps * (2 * N - 1) * n * chains
            if updates > max_updates:
                raise SizeError(f"lambda={lam}: {updates} site updates exceed max_updates")
            for c in range(chains):
                jobs.append({"key": (lam, label, c), "spec": spec, "mode": "mcmc",
                             "seed": derive_seed(seed, f"verify-fs/n={n}/lam={lam!r}/{label}/chain={c}"),
                             "sweeps": sweeps, "thin": thin, "burn_in": burn_in})
            if label == "zero" and n <= 3 and exact_cost <= exact_budget:
                jobs.append({"key": (lam, label, "exact"), "spec": spec, "mode": "exact",
                             "budget": exact_budget})
    results = {r["key"]: r for r in parallel_map(_fs_unit, jobs, workers)}

    cdf = fs_reference(n, alpha, sigma2, R, h)
    rows = []
    for lam, H, N, M, bounds in meta:
        runtime = sum(r["runtime"] for k, r in results.items() if k[0] == lam)

        def law(label):
            if n == 1:
                return results[(lam, label, "exact")]["p"], 0
            tot = sum(results[(lam, label, c)]["p"] for c in range(chains))
            count = sum(results[(lam, label, c)]["samples"] for c in range(chains))
            return tot / tot.sum(), count

        shift = stats.lattice_shift(n, 0, period, bounds["zero"])
        p0, samples = law("zero")
        ks0 = stats.lattice_ks(p0, H, cdf, period, shift)
        exact = results.get((lam, "zero", "exact"))
        ks_exact = (stats.lattice_ks(exact["p"], H, cdf, period, shift)["corrected"]
                    if exact is not None else float("nan"))
        ks_b = float("nan")
        if probe_boundary:
            shift_b = stats.lattice_shift(n, 0, period, bounds["raised"])
            ks_b = stats.lattice_ks(law("raised")[0], H, cdf, period, shift_b)["corrected"]
        rows.append(ConvergenceRow(lam, H, N, M, ks0["corrected"], ks0["raw"], ks_exact, ks_b,
                                   samples, runtime))
    return ConvergenceReport(n, rows, period, sigma2, boundary_C)


def run_verify_fs(cfg, workers: int) -> Artifacts:
    p = cfg.params
    report = verify_fs_experiment(
        p["n"], p["lambdas"], cfg.objects["kernel"], p["alpha"], p["N_factor"], p["boundary_C"],
        p["probe_boundary"], p["R"], p["h"], p["sweeps"], p["thin"], p["burn_in"], p["chains"],
        p["exact_budget"], p["max_updates"], cfg.seed, workers)
    arts = Artifacts()
    arts.table("convergence.csv", report.header(), report.table())
    arts.summary = {"n": report.n, "kernel_variance": report.sigma2, "period": report.period,
                    **report.verdicts()}
    arts.extra_manifest = {"runtime_seconds": {repr(r.lam): r.runtime for r in report.rows}}
    return arts


# ---------------------------------------------------------------------------
# single-subcommand runners
# ---------------------------------------------------------------------------


def run_spectrum(cfg, workers: int) -> Artifacts:
    p = cfg.params
    pot = cfg.objects["potential"]
    basis = spectral.solve_spectrum(pot, p["R"], p["h"], p["k"])
    arts = Artifacts()
    arts.table("eigenvalues.csv", ["j", "e_j"], [[j, e] for j, e in enumerate(basis.eigenvalues)])
    stride = p["stride"]
    grid = basis.grid[::stride]
    arts.table("eigenfunctions.csv", ["r"] + [f"phi_{j}" for j in range(basis.k)],
               np.column_stack([grid, basis.phi[:, ::stride].T]).tolist())
    summary = {"e0": basis.eigenvalues[0], "eigenvalues": basis.eigenvalues, "grid_points": len(basis.grid)}
    if pot.form == "power" and pot.alpha == 1.0:
        summary["airy_e0"] = spectral.airy_e0(pot.c, pot.sigma)
        summary["airy_chi"] = spectral.airy_chi(pot.c, pot.sigma)
    arts.summary = summary
    return arts


def _fs_chain(job: dict) -> dict:
    path = spectral.simulate_diffusion(job["basis"], job["n"], job["x0"], job["dt"], job["steps"],
                                       job["seed"], job["record_every"])
    return {"states": path.states, "rejected": path.rejected, "times": path.times}


def _fs_endpoints(job: dict) -> np.ndarray:
    return spectral.simulate_endpoints(job["basis"], 1, job["x0"], job["t"], job["dt"],
                                       job["paths"], job["seed"])


def semigroup_check(basis, x0: float, t: float, dt: float, paths: int, seed: int,
                    observables=None) -> list:
    """Compare ``E f(X_t)`` from the SDE with ``S^t f(x0)`` for a few test functions."""
    observables = observables or {
        "r": lambda r: r,
        "r^2": lambda r: r * r,
        "exp(-r)": lambda r: np.exp(-r),
    }
    ends = spectral.simulate_endpoints(basis, 1, [x0], t, dt, paths, seed)[:, 0]
    out = []
    for name, f in observables.items():
        sg = spectral.semigroup_apply(basis, t, f(basis.grid))
        predicted = float(np.interp(x0, basis.grid, sg))
        vals = f(ends)
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(len(vals)))
        out.append({"observable": name, "semigroup": predicted, "sde_mean": mean, "sde_se": se,
                    "z": (mean - predicted) / se if se > 0 else 0.0})
    return out


def run_fs_sim(cfg, workers: int) -> Artifacts:
    p = cfg.params
    n = p["n"]
    basis = spectral.solve_spectrum(cfg.objects["potential"], p["R"], p["h"], max(n, 2))
    jobs = [{"basis": basis, "n": n, "x0": p["x0"], "dt": p["dt"], "steps": p["steps"],
             "record_every": p["record_every"], "seed": derive_seed(cfg.seed, f"fs-sim/chain={c}")}
            for c in range(p["chains"])]
    res = parallel_map(_fs_chain, jobs, workers)
    states = np.vstack([r["states"] for r in res])
    cdfs = spectral.marginal_cdfs(basis, n)
    arts = Artifacts()
    summary = {"n": n, "samples": len(states), "rejected": sum(r["rejected"] for r in res),
               "mean": states.mean(axis=0)}
    ks = [stats.ks_sample(states[:, l], stats.TabulatedCDF(basis.grid, cdfs[l])) for l in range(n)]
    summary["ks_occupation"] = ks
    if n == 2:
        stride = max(1, int(round(0.05 / basis.h)))
        r, dens = spectral.pair_density_grid(basis, stride)
        joint = dens.cumsum(axis=0).cumsum(axis=1) * (basis.h * stride) ** 2
        summary["ks_joint"] = stats.ks_2d(states, r, joint)
    probe = np.linspace(0.0, min(basis.R, float(states.max()) * 1.2), 201)
    rows = []
    for s in probe:
        row = [s]
        for l in range(n):
            row += [float(np.mean(states[:, l] <= s)), float(np.interp(s, basis.grid, cdfs[l]))]
        rows.append(row)
    arts.table("occupation.csv", ["r"] + [f"{k}_{l + 1}" for l in range(n) for k in ("empirical", "reference")], rows)
    traj = res[0]
    stride = p["trajectory_stride"]
    arts.table("trajectory.csv", ["t"] + [f"r_{l + 1}" for l in range(n)],
               np.column_stack([traj["times"][::stride], traj["states"][::stride]]).tolist())
    sg = p["semigroup"]
    if sg["paths"] > 0 and n == 1:
        checks = semigroup_check(basis, p["x0"][0], sg["t"], sg["dt"], sg["paths"],
                                 derive_seed(cfg.seed, "fs-sim/semigroup"))
        arts.table("semigroup.csv", ["observable", "semigroup", "sde_mean", "sde_se", "z"],
                   [[c["observable"], c["semigroup"], c["sde_mean"], c["sde_se"], c["z"]] for c in checks])
        summary["semigroup_max_abs_z"] = max(abs(c["z"]) for c in checks)
    arts.summary = summary
    return arts


def _walk_chain(job: dict):
    return walks.mcmc_histograms(job["spec"], job["seed"], job["sweeps"], t=job["t"],
                                 thin=job["thin"], burn_in=job["burn_in"])


def run_walks(cfg, workers: int) -> Artifacts:
    p = cfg.params
    spec = cfg.objects["spec"]
    t = p["t"]
    summary = {"n": spec.n, "N": spec.N, "M": spec.M, "H": _safe_h(spec.tilt), "mode": p["mode"]}
    if p["mode"] == "exact":
        if spec.n == 1:
            marg = walks.marginal_height(spec, t)[None, :]
            summary["log_partition"] = walks.log_transfer_partition(spec)
        else:
            marg = walks.path_marginals(walks.ordered_marginal(spec, t, p["budget"]))
            summary["log_partition"] = walks.log_ordered_partition(spec, p["budget"])
    else:
        jobs = [{"spec": spec, "seed": derive_seed(cfg.seed, f"walks/chain={c}"), "sweeps": p["sweeps"],
                 "t": t, "thin": p["thin"], "burn_in": p["burn_in"]} for c in range(p["chains"])]
        hists = parallel_map(_walk_chain, jobs, workers)
        counts = sum(h.counts for h in hists)
        summary["samples"] = int(sum(h.samples for h in hists))
        marg = counts / summary["samples"]
    x = np.arange(spec.M + 1)
    summary["mean_heights"] = (marg @ x).tolist()
    arts = Artifacts()
    arts.table("marginal.csv", ["height"] + [f"p_{l + 1}" for l in range(spec.n)],
               np.column_stack([x, marg.T]).tolist())
    arts.summary = summary
    return arts


def _safe_h(tilt):
    try:
        return tilt.h_lambda
    except Exception:
        return None


def run_wulff(cfg, workers: int) -> Artifacts:
    p = cfg.params
    energy = cfg.objects["energy"]
    poly = wulff.build_wulff(energy, p["K"], p["normalization"])
    raw = wulff.build_wulff(energy, p["K"])
    w_poly = raw.area / energy.phi_e**2
    unit = wulff.build_wulff(energy, p["K"], "unit-radius")
    try:
        curvature = wulff.wulff_curvature(energy)
    except (NonSmoothError, ConvexityError):
        curvature = None
    arts = Artifacts()
    arts.table("vertices.csv", ["x", "y"], poly.vertices.tolist())
    arts.summary = {
        "normalization": p["normalization"], "K": p["K"], "phi_e": energy.phi_e,
        "area": poly.area, "energy": poly.energy, "w_polygon": w_poly,
        "w": wulff.shape_area(energy, p["K"]),
        "energy_identity_defect": unit.energy - 2.0 * energy.phi_e * w_poly,
        "axis_curvature": curvature,
    }
    return arts


def run_dcvp(cfg, workers: int) -> Artifacts:
    p = cfg.params
    energy = cfg.objects["energy"]
    sols = [wulff.solve_dcvp(energy, nu, p["grid_points"]) for nu in p["nu"]]
    arts = Artifacts()
    arts.table("dcvp.csv", ["nu", "a_star", "value", "tie", "grid_argmax"],
               [[s.nu, s.a_star, s.value, len(s.optimizers) > 1, s.grid_argmax] for s in sols])
    s0 = sols[0]
    arts.summary = {"nu_beta": s0.nu_beta, "rho_beta": s0.rho_beta, "a_beta": s0.a_beta,
                    "grid_nu_beta": s0.grid_nu_beta, "degenerate": s0.degenerate,
                    "w": wulff.shape_area(energy),
                    "solutions": [{"nu": s.nu, "optimizers": list(s.optimizers), "a_star": s.a_star,
                                   "value": s.value} for s in sols]}
    return arts


def run_mcvp(cfg, workers: int) -> Artifacts:
    p = cfg.params
    energy = cfg.objects["energy"]
    grid = np.linspace(p["a_min"], p["a_max"], p["a_steps"])
    scan = wulff.scan_mcvp(energy, p["D"], grid, p["refine_tol"], p["starts"], seed=cfg.seed)
    arts = Artifacts()
    arts.table("scan.csv", ["a", "layers", "objective", "areas", "shapes"],
               [[s.a, s.layers, s.objective, ";".join(format(x, ".17g") for x in s.areas),
                 ";".join(s.shapes)] for s in scan.solutions])
    arts.table("transitions.csv", ["b", "layers_below", "layers_above"],
               [[b, lo, hi] for b, lo, hi in scan.transitions])
    arts.summary = {"D": p["D"], "w": wulff.shape_area(energy),
                    "transition_points": scan.transition_points,
                    "max_layers": max(s.layers for s in scan.solutions)}
    return arts


def run_stack(cfg, workers: int) -> Artifacts:
    p = cfg.params
    energy = cfg.objects["energy"]
    st = wulff.entropic_stack(energy, p["beta"], p["N"], p["cbar"])
    w = wulff.shape_area(energy)
    arts = Artifacts()
    arts.table("layers.csv", ["k", "tilt", "area", "corner_radius"],
               [[k + 1, nu, b, wulff.corner_radius(b, w)] for k, (nu, b) in enumerate(zip(st.tilts, st.areas))])
    arts.summary = {"n_star": st.n_star, "nu_beta": st.nu_beta, "boundary_coincidence": st.boundary,
                    "beta": st.beta, "N": st.N, "cbar": st.cbar}
    return arts


def run_saw(cfg, workers: int) -> Artifacts:
    p = cfg.params
    base = saw.TiltedSawEnsemble(p["beta"], 0.0, p["N"], p["x"], p["y"], p["max_length"], p["budget"])
    counts = saw.enumerate_bridges(base)
    rows = []
    for lam in p["lambdas"]:
        ens = base.with_(lam=lam)
        m = saw.tilted_measure(ens, counts)
        obs = saw.observables(ens)
        cone = saw.cone_decomposition(ens, p["eps"])
        rows.append([lam, m.Z, obs.mean_area, obs.mean_length, obs.mean_max_height,
                     obs.height_at_zero, cone.mean_span, cone.mean_square_rise, cone.chi_hat,
                     m.relative_tail_bound])
    arts = Artifacts()
    arts.table("counts.csv", ["length", "area", "count"],
               [[l, a, c] for l, a, c in zip(counts.lengths, counts.areas, counts.counts)])
    arts.table("tilts.csv", ["lambda", "Z", "mean_area", "mean_length", "mean_max_height",
                             "height_at_zero", "mean_span", "mean_square_rise", "chi_hat",
                             "relative_tail_bound"], rows)
    arts.summary = {"bridges": counts.total, "dfs_nodes": counts.nodes,
                    "tail_bound": saw.tail_bound(p["beta"], p["max_length"])}
    return arts


def run_constants(cfg, workers: int) -> Artifacts:
    p = cfg.params
    energy = cfg.objects["energy"]
    roots = [wulff.abraham_threshold(b) for b in p["beta"]]
    b0 = wulff.metastability_B0(p["m_star"], energy)
    arts = Artifacts()
    arts.table("abraham.csv", ["beta", "h_w", "residual", "raw_residual"],
               [[r.beta, r.h_w, r.residual, r.raw_residual] for r in roots])
    arts.summary = {"h_w": {repr(r.beta): r.h_w for r in roots},
                    "residual": {repr(r.beta): r.residual for r in roots},
                    "B0": b0, "m_star": p["m_star"], "tau_e": energy.phi_e,
                    "w": wulff.shape_area(energy)}
    return arts


RUNNERS = {
    "spectrum": run_spectrum,
    "fs-sim": run_fs_sim,
    "walks": run_walks,
    "verify-fs": run_verify_fs,
    "wulff": run_wulff,
    "dcvp": run_dcvp,
    "mcvp": run_mcvp,
    "stack": run_stack,
    "saw": run_saw,
    "constants": run_constants,
}
