"""Character vocabulary and seeded window batches over a token stream."""

import typing
from dataclasses import dataclass

import torch

from probdr_transformer.exceptions import InvalidInputError, InvalidParameterError
from probdr_transformer.linalg import generator
from probdr_transformer.utils.hashing import derive_seed

SPLITS = ("train", "val")


@dataclass(frozen=True)
class CharVocab:
    """Sorted unique characters of a text; index i encodes ``chars[i]``."""

    chars: str

    @classmethod
    def from_text(cls, text: str) -> "CharVocab":
        if not text:
            raise InvalidInputError("cannot build a vocabulary from empty text")
        return cls("".join(sorted(set(text))))

    @property
    def size(self) -> int:
        return len(self.chars)

    def encode(self, s: str) -> typing.List[int]:
        stoi = {ch: i for i, ch in enumerate(self.chars)}
        try:
            return [stoi[ch] for ch in s]
        except KeyError as e:
            raise InvalidInputError(f"character {e.args[0]!r} is not in the vocabulary")

    def decode(self, ids: typing.Iterable[int]) -> str:
        return "".join(self.chars[int(i)] for i in ids)


def char_vocab(text: str) -> typing.Tuple[typing.Callable[[str], typing.List[int]], typing.Callable, int]:
    """Returns ``(encode, decode, vocab_size)`` for the sorted character set of ``text``."""
    vocab = CharVocab.from_text(text)
    return vocab.encode, vocab.decode, vocab.size


def split_tokens(tokens, split_fraction: float = 0.9) -> typing.Tuple[torch.Tensor, torch.Tensor]:
    """The first ``split_fraction`` of the stream is train, the rest val."""
    if not 0.0 < split_fraction < 1.0:
        raise InvalidParameterError(f"split_fraction must lie in (0, 1), got {split_fraction}")
    tokens = torch.as_tensor(tokens, dtype=torch.long)
    cut = int(split_fraction * tokens.shape[0])
    return tokens[:cut], tokens[cut:]


def get_batch(
    data: torch.Tensor,
    block_size: int,
    batch_size: int,
    seed: int,
    split: str,
    step: int,
) -> typing.Tuple[torch.Tensor, torch.Tensor]:
    """
    ``batch_size`` random windows of ``data``; targets are inputs shifted by one.

    Window starts come from a generator seeded by (seed, split, step), so a batch depends
    on nothing but those three values.

    Raises:
        InvalidInputError: If ``data`` holds fewer than block_size + 2 tokens.
    """
    if block_size < 1 or batch_size < 1:
        raise InvalidParameterError(f"block_size and batch_size must be positive, got {block_size}, {batch_size}")
    n = data.shape[0]
    if n < block_size + 2:
        raise InvalidInputError(
            f"{split} split has {n} tokens, need more than block_size + 1 = {block_size + 1}"
        )
    g = generator(derive_seed(seed, split, step))
    starts = torch.randint(n - block_size, (batch_size,), generator=g)
    x = torch.stack([data[s : s + block_size] for s in starts.tolist()])
    y = torch.stack([data[s + 1 : s + 1 + block_size] for s in starts.tolist()])
    return x, y


def make_batches(
    tokens,
    block_size: int,
    batch_size: int,
    split_fraction: float,
    seed: int,
    split: str,
) -> typing.Iterator[typing.Tuple[torch.Tensor, torch.Tensor]]:
    """Endless stream of batches for ``split``; the k-th batch is ``get_batch(..., step=k)``."""
    if split not in SPLITS:
        raise InvalidParameterError(f"split must be one of {SPLITS}, got '{split}'")
    train, val = split_tokens(tokens, split_fraction)
    data = train if split == "train" else val
    if data.shape[0] < block_size + 2:
        raise InvalidInputError(
            f"{split} split has {data.shape[0]} tokens, need more than block_size + 1 = {block_size + 1}"
        )
    return _stream(data, block_size, batch_size, seed, split)


def _stream(data, block_size, batch_size, seed, split):
    step = 0
    while True:
        yield get_batch(data, block_size, batch_size, seed, split, step)
        step += 1
