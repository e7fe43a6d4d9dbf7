"""coresift: difficulty-weighted data selection for token datasets.

Co-trains a linear scoring head with a small target model so that per-sample
loss weights become a learned difficulty signal, then greedily selects the
hardest samples under a k-nearest-neighbor diversity penalty. Ships the
classic pruning baselines, a synthetic oracle generator, and analysis tools.
"""

__version__ = "0.1.0"
