"""Word-level vocabulary for the small backbone, plus a wrapper for HF tokenizers.

Both map one input word to a list of ids so that features can track which
positions belong to which word.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Iterable

from ..corpus import BOS, ENT, EOS, PAD, STANCE, UNK, AUTHOR, SOMEONE

SPECIALS = (PAD, BOS, EOS, UNK, ENT, STANCE, "POS", "NEG", AUTHOR, SOMEONE)


class WordVocab:
    def __init__(self, words: Iterable[str] = ()):
        self.itos: list[str] = list(SPECIALS)
        self.stoi: dict[str, int] = {w: i for i, w in enumerate(self.itos)}
        for w in words:
            self.add(w)

    def add(self, word: str) -> int:
        if word not in self.stoi:
            self.stoi[word] = len(self.itos)
            self.itos.append(word)
        return self.stoi[word]

    @classmethod
    def build(cls, token_lists: Iterable[Iterable[str]], min_count: int = 1) -> WordVocab:
        counts = Counter(tok for toks in token_lists for tok in toks)
        return cls(sorted(w for w, c in counts.items() if c >= min_count))

    def __len__(self) -> int:
        return len(self.itos)

    @property
    def pad_id(self) -> int:
        return self.stoi[PAD]

    @property
    def bos_id(self) -> int:
        return self.stoi[BOS]

    @property
    def eos_id(self) -> int:
        return self.stoi[EOS]

    def encode_word(self, word: str, first: bool = False) -> list[int]:
        return [self.stoi.get(word, self.stoi[UNK])]

    def encode_words(self, words: Iterable[str]) -> list[int]:
        return [i for n, w in enumerate(words) for i in self.encode_word(w, n == 0)]

    def decode(self, ids: Iterable[int]) -> str:
        return " ".join(self.itos[i] for i in ids)

    def to_dict(self) -> dict:
        return {"type": "word", "itos": self.itos}

    @classmethod
    def from_dict(cls, d: dict) -> WordVocab:
        vocab = cls()
        for w in d["itos"]:
            vocab.add(w)
        return vocab


class HFWordTokenizer:
    """Adapts a Hugging Face tokenizer (BPE with a leading-space convention)."""

    def __init__(self, tokenizer, name_or_path: str | None = None):
        missing = [t for t in (ENT, STANCE, AUTHOR, SOMEONE) if t not in tokenizer.get_vocab()]
        if missing:
            tokenizer.add_special_tokens({"additional_special_tokens": missing})
        self.tok = tokenizer
        self.name_or_path = name_or_path

    def __len__(self) -> int:
        return len(self.tok)

    @property
    def pad_id(self) -> int:
        return self.tok.pad_token_id

    @property
    def bos_id(self) -> int:
        return self.tok.bos_token_id

    @property
    def eos_id(self) -> int:
        return self.tok.eos_token_id

    def encode_word(self, word: str, first: bool = False) -> list[int]:
        vocab = self.tok.get_vocab()
        if word in vocab and word in self.tok.all_special_tokens:
            return [vocab[word]]
        return self.tok.encode(word if first else " " + word, add_special_tokens=False)

    def encode_words(self, words: Iterable[str]) -> list[int]:
        return [i for n, w in enumerate(words) for i in self.encode_word(w, n == 0)]

    def decode(self, ids: Iterable[int]) -> str:
        pieces = []
        special = set(self.tok.all_special_ids)
        chunk: list[int] = []
        for i in ids:
            if i in special:
                if chunk:
                    pieces.append(self.tok.decode(chunk).strip())
                    chunk = []
                pieces.append(self.tok.convert_ids_to_tokens(i))
            else:
                chunk.append(i)
        if chunk:
            pieces.append(self.tok.decode(chunk).strip())
        return " ".join(p for p in pieces if p)

    def to_dict(self) -> dict:
        return {"type": "hf", "name_or_path": self.name_or_path}


def tokenizer_from_dict(d: dict):
    if d["type"] == "word":
        return WordVocab.from_dict(d)
    from transformers import AutoTokenizer

    return HFWordTokenizer(AutoTokenizer.from_pretrained(d["name_or_path"]), d["name_or_path"])
