from hashlib import sha256

SEED_MASK = (1 << 63) - 1


def gen_hash(text: str) -> str:
    """Creates a sha256 hash from the input string and return the hex representation.
    Returns:
        str: The hex representation of the hash on the input
    """
    return sha256(text.encode()).digest().hex()


def derive_seed(seed: int, *labels) -> int:
    """Derives an independent sub-stream seed from a root seed.

    The derived seed is the first 8 bytes of sha256("seed/label1/label2/..."), read
    big-endian and masked to 63 bits, so it is always a valid ``torch`` seed.

    Example:
        derive_seed(7, "batches", "train", 12)

    Returns:
        int: The sub-stream seed.
    """
    path = "/".join(str(part) for part in (seed, *labels))
    return int(gen_hash(path)[:16], 16) & SEED_MASK
