"""Slot-to-prompt mapping.

The four condition slots resolve to prompts from one table: the target text,
the empty prompt, the negative fragment alone, and the target text joined
with the negative fragment. The last composition is the defining property of
target-negative conditioning and is never stored, only derived.
"""

from __future__ import annotations

from dataclasses import dataclass

DEFAULT_NEGATIVE_FRAGMENT = (
    "oversaturated, smooth, pixelated, cartoon, foggy, hazy, blurry, bad structure, noisy, malformed"
)

SLOTS = ("target", "null", "gnp", "tnp")


@dataclass(frozen=True)
class PromptTable:
    target_text: str
    negative_fragment: str = DEFAULT_NEGATIVE_FRAGMENT

    def text_for(self, slot: str) -> str:
        if slot == "target":
            return self.target_text
        if slot == "null":
            return ""
        if slot == "gnp":
            return self.negative_fragment
        if slot == "tnp":
            return self.target_text + ", " + self.negative_fragment
        raise ValueError(f"unknown slot {slot!r}; valid slots: {', '.join(SLOTS)}")

    def as_dict(self) -> dict:
        return {slot: self.text_for(slot) for slot in SLOTS}
