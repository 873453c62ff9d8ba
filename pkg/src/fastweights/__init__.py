"""Fast-weight recurrent networks: a decaying Hebbian associative memory
bolted onto a ReLU RNN, with LSTM/IRNN baselines, reverse-mode autodiff,
and the retrieval / glimpse / Catch experiments."""

__version__ = "0.1.0"
