"""Expert-guided policy optimization: simulator, guardian, learner and harness."""

__version__ = "0.1.0"
