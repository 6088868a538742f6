"""Lightweight language identification from stopword and trigram profiles.

Built-in profiles cover German, French, Italian and English. Texts shorter
than three tokens, or with no overlap with any profile, come back as
"unknown" rather than a guess. An external detector speaking a one-line-in /
one-line-out protocol on stdin/stdout can be plugged in instead.
"""

from __future__ import annotations

import shlex
import subprocess
from typing import Dict, FrozenSet, Optional, Sequence

from .errors import InputError
from .ingest import normalize_text

UNKNOWN = "unknown"

_PROFILE_WORDS: Dict[str, str] = {
    "de": """
        der die das und ist nicht sie ich wir ihr ein eine einen einem dem den
        des im in an auf mit für von zu bei nach über um auch aber oder wenn
        dann dass es er man was wer wie wo noch nur schon sehr hat haben wird
        werden wurde sind war waren kann können muss soll als aus durch gegen
        ohne unter vor zwischen heute hier mehr alle viele diese dieser dieses
        rat regierung präsident präsidentin sitzung gesetz kommission frage
        antwort antrag arbeit bericht stimmt beschluss kanton gemeinde danke
        herr frau damen herren sprechen stimmen mehrheit
    """,
    "fr": """
        le la les un une des et est ne pas je il elle nous vous ils elles ce
        cette ces de du au aux dans sur avec pour par sans sous que qui dont
        où ou mais donc car si alors aussi bien plus moins très tout tous
        toute toutes ont être avoir fait faire comme leur leurs son sa ses
        votre vos notre nos conseil gouvernement président séance projet loi
        commission question réponse proposition approuve travail rapport
        décision canton commune merci monsieur madame parole majorité
    """,
    "it": """
        il lo la i gli le un uno una e è non di del della dei delle nel nella
        che chi cui da in con su per tra fra ma se anche come più meno molto
        tutto tutti questa questo questi sono siamo siete hanno ha essere
        avere fatto fare loro suo sua suoi nostro vostro consiglio governo
        presidente seduta progetto legge commissione domanda risposta
        proposta approva lavoro rapporto decisione cantone comune grazie
        signor signora parola maggioranza
    """,
    "en": """
        the a an and is are was were be been not no of in on at to for from
        with without by as that this these those it its he she they we you i
        his her their our your what which who where when why how all any both
        each more most other some such only own same so than too very can
        will just do does did have has had council government president
        session project law commission question answer proposal approves work
        report decision municipality thanks mister madam floor majority
    """,
}


def _trigrams(text: str) -> FrozenSet[str]:
    padded = f" {text} "
    return frozenset(padded[k:k + 3] for k in range(len(padded) - 2))


class LanguageProfile:
    def __init__(self, code: str, words: Sequence[str]):
        self.code = code
        self.stopwords = frozenset(words)
        grams = set()
        for word in words:
            grams.update(_trigrams(word))
        self.trigrams = frozenset(grams)


_PROFILES = {
    code: LanguageProfile(code, text.split())
    for code, text in _PROFILE_WORDS.items()
}


def detect_language(text: str, min_tokens: int = 3) -> str:
    """Best-scoring language among the built-in profiles, or "unknown".

    Score = stopword hit fraction plus a small trigram-overlap term. Fewer
    than ``min_tokens`` tokens, or zero overlap with every profile, yields
    "unknown" so that short or inscrutable sentences are not purged by the
    language filter.
    """
    if not text:
        raise InputError("empty text")
    tokens = normalize_text(text).text.split()
    if len(tokens) < min_tokens:
        return UNKNOWN
    grams = _trigrams(" ".join(tokens))
    best_code = UNKNOWN
    best_score = 0.0
    for code in sorted(_PROFILES):
        profile = _PROFILES[code]
        stop_fraction = sum(1 for tok in tokens if tok in profile.stopwords) / len(tokens)
        overlap = len(grams & profile.trigrams) / max(1, len(grams))
        score = stop_fraction + 0.2 * overlap
        if score > best_score:
            best_score = score
            best_code = code
    return best_code


class SubprocessDetector:
    """External detector: one sentence per line in, one language code out."""

    def __init__(self, command: str):
        self._proc = subprocess.Popen(
            shlex.split(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1)

    def __call__(self, text: str) -> str:
        assert self._proc.stdin is not None and self._proc.stdout is not None
        self._proc.stdin.write(text.replace("\n", " ") + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise InputError("external language detector closed its output")
        return line.strip()

    def close(self) -> None:
        if self._proc.stdin is not None:
            self._proc.stdin.close()
        self._proc.wait(timeout=10)

    def __enter__(self) -> "SubprocessDetector":
        return self

    def __exit__(self, *_exc) -> Optional[bool]:
        self.close()
        return None
