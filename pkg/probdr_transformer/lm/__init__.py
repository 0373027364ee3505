from .data import CharVocab, char_vocab, get_batch, make_batches, split_tokens
from .model import GPT, LmConfig, cross_entropy, gradient_check, lm_backward, lm_forward, load_checkpoint
from .train import TrainConfig, TrainRecord, TrainRun, train
from .compare import ComparisonReport, compare_modes
