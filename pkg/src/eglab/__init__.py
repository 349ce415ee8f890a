"""Active-learning query strategies for CTC sequence models.

Implements random, entropy, predicted-CTC and expected-gradient-length
(EGL) pool scoring on top of a small CTC frame classifier, together with
Fisher-information checks relating EGL to estimator variance.
"""

from .ctc import collapse, ctc_brute_force, ctc_loss, marginal_over_labels
from .dataio import GenConfig, LabelOracle, generate, load_dataset, save_dataset
from .decode import Hypothesis, beam_search, greedy_decode, top1
from .errors import (ConfigError, EglabError, InputError, ParseError, RepresentabilityError,
                     SingularFisherError, SizeError, TrainingError)
from .metrics import cer, edit_distance, evaluate, rank_agreement, wer
from .seqmodel import (Alphabet, ModelParams, ModelShape, TrainConfig, Utterance, forward,
                       init_params, loss_and_grad, softmax_rows, train)
from .strategies import (ScoreRecord, StrategyConfig, score_egl, score_entropy, score_pctc,
                         score_pool, score_random, select_batch)

__version__ = "0.1.0"
