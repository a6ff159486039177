"""Configuration, experiment runners and the command-line interface."""
