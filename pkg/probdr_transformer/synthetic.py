"""
Offline datasets: Gaussian blobs for the dimensionality-reduction pipeline, the
three-point chain for closed-form embeddings, and a deterministic text corpus for the
language model.
"""

import math

import torch

from probdr_transformer.exceptions import InvalidParameterError
from probdr_transformer.linalg import DTYPE, generator
from probdr_transformer.pipeline.data import LabeledDataset
from probdr_transformer.utils.hashing import derive_seed


def make_blobs(
    n: int = 300,
    d: int = 50,
    centers: int = 3,
    separation: float = 8.0,
    seed: int = 0,
) -> LabeledDataset:
    """
    ``centers`` isotropic unit-variance Gaussian blobs in ``d`` dimensions.

    Centre c sits at (separation/√2)·e_c, so every pair of centres is exactly
    ``separation`` standard deviations apart. Point i belongs to blob i mod centers.
    """
    if centers < 1 or centers > d:
        raise InvalidParameterError(f"centers must lie in [1, d={d}], got {centers}")
    if n < centers:
        raise InvalidParameterError(f"need at least one point per blob, got n={n}, centers={centers}")
    labels = torch.arange(n, dtype=torch.long) % centers
    means = torch.zeros(centers, d, dtype=DTYPE)
    means[torch.arange(centers), torch.arange(centers)] = separation / math.sqrt(2.0)
    noise = torch.randn(n, d, generator=generator(derive_seed(seed, "blobs")), dtype=DTYPE)
    return LabeledDataset(
        features=means[labels] + noise,
        labels=labels,
        source=f"blobs(n={n}, d={d}, centers={centers}, separation={separation}, seed={seed})",
    )


def chain_dataset() -> LabeledDataset:
    """Three collinear points 0, 1, 2; their 1-NN graph is the path 0 - 1 - 2."""
    return LabeledDataset(
        features=torch.tensor([[0.0], [1.0], [2.0]], dtype=DTYPE),
        labels=torch.tensor([0, 1, 2]),
        source="chain(3)",
    )


SUBJECTS = ("the king", "a fool", "my lord", "the queen", "this knave", "thy brother", "the duke")
VERBS = ("doth love", "shall see", "hath slain", "will pardon", "must serve", "did betray", "may follow")
OBJECTS = ("the crown", "his honour", "the night", "our cause", "her father", "the sea", "a ghost")
ENDINGS = (".", "!", "?", ";")


def synthetic_corpus(n_chars: int = 120_000, seed: int = 0) -> str:
    """
    Pseudo-verse built from a small phrase grammar; the same seed gives the same text.

    Lines are ``SUBJECT VERB OBJECT<punct>`` with a blank line every eight lines, which
    gives the model short- and long-range structure to pick up.
    """
    if n_chars < 1:
        raise InvalidParameterError(f"n_chars must be positive, got {n_chars}")
    g = generator(derive_seed(seed, "corpus"))
    pools = (SUBJECTS, VERBS, OBJECTS, ENDINGS)
    lines = []
    size = 0
    while size < n_chars:
        picks = [int(torch.randint(len(pool), (1,), generator=g)) for pool in pools]
        subject, verb, obj, end = (pool[i] for pool, i in zip(pools, picks))
        line = f"{subject.capitalize()} {verb} {obj}{end}\n"
        if len(lines) % 8 == 7:
            line += "\n"
        lines.append(line)
        size += len(line)
    return "".join(lines)[:n_chars]
