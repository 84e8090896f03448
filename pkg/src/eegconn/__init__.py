"""EEG emotion classification from functional-connectivity features.

Band decomposition, differential entropy and connectivity features
(Pearson, coherence, phase locking), Fisher-score selection, linear-SVM
leave-one-out evaluation with trial voting, sliding-interval analysis, a
small recurrent baseline and a synthetic data generator.
"""

__version__ = "0.1.0"

from ._accel import backend_name  # noqa: E402,F401
