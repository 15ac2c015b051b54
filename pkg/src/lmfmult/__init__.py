"""Low-rank multimodal fusion transformers (LMF-MulT, Fusion-Based-CM-Attn-MulT)
and a reduced MulT baseline, built on a small numpy autodiff core."""

__version__ = "0.1.0"
