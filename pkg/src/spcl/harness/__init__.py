"""Data generation, file formats, benchmarking and the command line."""
