"""Policy-gradient fine-tuning of a small recurrent SMILES language model."""

__version__ = "0.1.0"
