"""Word error rate via minimal-cost alignment with unit costs.

Alignment is the classic dynamic program over reference/hypothesis prefixes;
backtracking on cost ties prefers substitution over deletion over insertion,
which keeps the counts deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractError


@dataclass(frozen=True)
class WerReport:
    substitutions: int
    deletions: int
    insertions: int
    ref_words: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        """Percent; can exceed 100 when insertions dominate."""
        if self.ref_words < 1:
            raise ContractError("WER needs at least one reference word")
        return 100.0 * self.errors / self.ref_words

    def summary(self) -> str:
        return (f"WER {self.wer:.2f}% (S={self.substitutions}, D={self.deletions}, "
                f"I={self.insertions}, N={self.ref_words})")


def edit_distance(ref, hyp):
    """(substitutions, deletions, insertions) of a minimal-cost alignment."""
    ref = list(ref)
    hyp = list(hyp)
    rows = len(ref) + 1
    cols = len(hyp) + 1
    dist = [[0] * cols for _ in range(rows)]
    for i in range(1, rows):
        dist[i][0] = i
    for j in range(1, cols):
        dist[0][j] = j
    for i in range(1, rows):
        prev_row = dist[i - 1]
        row = dist[i]
        ref_word = ref[i - 1]
        for j in range(1, cols):
            sub = prev_row[j - 1] + (ref_word != hyp[j - 1])
            dele = prev_row[j] + 1
            ins = row[j - 1] + 1
            best = sub
            if dele < best:
                best = dele
            if ins < best:
                best = ins
            row[j] = best

    subs = dels = inss = 0
    i, j = len(ref), len(hyp)
    while i > 0 or j > 0:
        here = dist[i][j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and dist[i - 1][j - 1] == here:
            i -= 1
            j -= 1
        elif i > 0 and j > 0 and dist[i - 1][j - 1] + 1 == here:
            subs += 1
            i -= 1
            j -= 1
        elif i > 0 and dist[i - 1][j] + 1 == here:
            dels += 1
            i -= 1
        else:
            inss += 1
            j -= 1
    return subs, dels, inss


def wer_report(pairs) -> WerReport:
    """Corpus-level pooling of S/D/I over (reference, hypothesis) word lists.

    Accepts strings (whitespace-tokenized) or pre-tokenized lists.
    """
    subs = dels = inss = ref_words = 0
    for ref, hyp in pairs:
        ref_list = ref.split() if isinstance(ref, str) else list(ref)
        hyp_list = hyp.split() if isinstance(hyp, str) else list(hyp)
        s, d, i = edit_distance(ref_list, hyp_list)
        subs += s
        dels += d
        inss += i
        ref_words += len(ref_list)
    if ref_words < 1:
        raise ContractError("WER needs at least one reference word across the corpus")
    return WerReport(substitutions=subs, deletions=dels, insertions=inss, ref_words=ref_words)
