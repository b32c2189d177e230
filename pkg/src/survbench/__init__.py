"""Cox regression and random survival forests for survival prediction benchmarks."""
__version__ = "0.1.0"
