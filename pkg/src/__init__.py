"""Lq-penalized sparse optimization: PSNP, proximal-gradient baselines and benchmarks."""
