"""Class-weighted and label-robust (LCVaR / LHCVaR) risks for imbalanced classification."""
