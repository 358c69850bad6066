"""Linear algebra, dataset I/O and configuration helpers."""
