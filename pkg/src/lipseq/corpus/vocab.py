"""The 12-class viseme vocabulary and the TIMIT phoneme-to-viseme mapping.

Internal viseme ids follow the table's row order (0..11). The decoder token
space adds sentinels: pad=0, visemes 1..12 (id+1), start=13, end=14. The
encoder/CTC space keeps visemes at 0..11 and appends blank=12.

The derived phoneme map is verified at import time against an independently
embedded flat copy of the table; a mismatch is a packaging bug and raises.
"""

from __future__ import annotations

from ..errors import DataError

# (long name, short manifest token, phonemes)
VISEME_TABLE = (
    ("Lips to teeth", "lips_to_teeth",
     ("f", "v")),
    ("Lips puckered", "lips_puckered",
     ("er", "ow", "r", "q", "w", "uh", "uw", "axr", "ux")),
    ("Lips together", "lips_together",
     ("b", "p", "m", "em")),
    ("Lips relaxed moderate opening to lips narrow-puckered", "lips_open_puckered",
     ("aw",)),
    ("Tongue between teeth", "tongue_between_teeth",
     ("dh", "th")),
    ("Lips forward", "lips_forward",
     ("ch", "jh", "sh", "zh")),
    ("Lips rounded", "lips_rounded",
     ("oy", "ao")),
    ("Teeth Approximated", "teeth_approximated",
     ("s", "z")),
    ("Lips relaxed narrow opening", "lips_relaxed_narrow",
     ("aa", "ae", "ah", "ay", "ey", "ih", "iy", "y", "eh", "ax-h", "ax", "ix")),
    ("Tongue up or down", "tongue_up_down",
     ("d", "l", "n", "t", "el", "nx", "en", "dx")),
    ("Tongue back", "tongue_back",
     ("g", "k", "ng", "eng")),
    ("Silence", "silence",
     ("sil", "pcl", "tcl", "kcl", "bcl", "dcl", "gcl", "h#", "#h", "pau", "epi")),
)

N_VISEMES = 12

PAD_ID = 0
START_ID = 13
END_ID = 14
VOCAB_SIZE = 15           # pad + 12 visemes + start + end (decoder space)
BLANK_ID = 12
CTC_CLASSES = 13          # 12 visemes + blank (encoder space)

LONG_NAMES = tuple(row[0] for row in VISEME_TABLE)
SHORT_NAMES = tuple(row[1] for row in VISEME_TABLE)
SHORT_TO_ID = {name: i for i, name in enumerate(SHORT_NAMES)}

PHONEME_TO_VISEME = {}
for _i, (_long, _short, _phs) in enumerate(VISEME_TABLE):
    for _ph in _phs:
        PHONEME_TO_VISEME[_ph] = _i

# Flat duplicate of the table used as the startup cross-check.
_PHONEME_CHECK = {
    "f": "lips_to_teeth", "v": "lips_to_teeth",
    "er": "lips_puckered", "ow": "lips_puckered", "r": "lips_puckered",
    "q": "lips_puckered", "w": "lips_puckered", "uh": "lips_puckered",
    "uw": "lips_puckered", "axr": "lips_puckered", "ux": "lips_puckered",
    "b": "lips_together", "p": "lips_together", "m": "lips_together",
    "em": "lips_together",
    "aw": "lips_open_puckered",
    "dh": "tongue_between_teeth", "th": "tongue_between_teeth",
    "ch": "lips_forward", "jh": "lips_forward", "sh": "lips_forward",
    "zh": "lips_forward",
    "oy": "lips_rounded", "ao": "lips_rounded",
    "s": "teeth_approximated", "z": "teeth_approximated",
    "aa": "lips_relaxed_narrow", "ae": "lips_relaxed_narrow",
    "ah": "lips_relaxed_narrow", "ay": "lips_relaxed_narrow",
    "ey": "lips_relaxed_narrow", "ih": "lips_relaxed_narrow",
    "iy": "lips_relaxed_narrow", "y": "lips_relaxed_narrow",
    "eh": "lips_relaxed_narrow", "ax-h": "lips_relaxed_narrow",
    "ax": "lips_relaxed_narrow", "ix": "lips_relaxed_narrow",
    "d": "tongue_up_down", "l": "tongue_up_down", "n": "tongue_up_down",
    "t": "tongue_up_down", "el": "tongue_up_down", "nx": "tongue_up_down",
    "en": "tongue_up_down", "dx": "tongue_up_down",
    "g": "tongue_back", "k": "tongue_back", "ng": "tongue_back",
    "eng": "tongue_back",
    "sil": "silence", "pcl": "silence", "tcl": "silence", "kcl": "silence",
    "bcl": "silence", "dcl": "silence", "gcl": "silence", "h#": "silence",
    "#h": "silence", "pau": "silence", "epi": "silence",
}


def verify_table() -> None:
    """Cross-check the derived map against the embedded flat copy."""
    if len(VISEME_TABLE) != N_VISEMES:
        raise AssertionError("viseme table must have exactly 12 classes")
    if set(PHONEME_TO_VISEME) != set(_PHONEME_CHECK):
        missing = set(_PHONEME_CHECK) ^ set(PHONEME_TO_VISEME)
        raise AssertionError(f"phoneme map/table mismatch: {sorted(missing)}")
    for ph, vid in PHONEME_TO_VISEME.items():
        if SHORT_NAMES[vid] != _PHONEME_CHECK[ph]:
            raise AssertionError(f"phoneme {ph!r} maps to {SHORT_NAMES[vid]!r}, "
                                 f"expected {_PHONEME_CHECK[ph]!r}")
    seen = set()
    for _, _, phs in VISEME_TABLE:
        for ph in phs:
            if ph in seen:
                raise AssertionError(f"phoneme {ph!r} appears in two viseme classes")
            seen.add(ph)


verify_table()


def normalize_phoneme(ph: str) -> str:
    return ph.strip().strip("/").lower()


def map_phonemes(phonemes) -> list[int]:
    """Map a phoneme sequence to viseme ids (adjacent duplicates preserved)."""
    out = []
    for ph in phonemes:
        key = normalize_phoneme(ph)
        if key not in PHONEME_TO_VISEME:
            raise DataError(f"unknown phoneme {ph!r}")
        out.append(PHONEME_TO_VISEME[key])
    return out


def viseme_name(vid: int, long: bool = False) -> str:
    return LONG_NAMES[vid] if long else SHORT_NAMES[vid]


def tokens_to_names(tokens) -> list[str]:
    return [SHORT_NAMES[t] for t in tokens]


def names_to_tokens(names) -> list[int]:
    out = []
    for name in names:
        if name not in SHORT_TO_ID:
            raise DataError(f"unknown viseme token {name!r}")
        out.append(SHORT_TO_ID[name])
    return out


def to_decoder_ids(visemes) -> list[int]:
    """Content viseme ids (0..11) -> decoder token ids (1..12)."""
    return [v + 1 for v in visemes]


def from_decoder_ids(tokens) -> list[int]:
    """Decoder token ids back to content viseme ids; sentinels are rejected."""
    out = []
    for t in tokens:
        if not 1 <= t <= N_VISEMES:
            raise ValueError(f"token {t} is not a content viseme id")
        out.append(t - 1)
    return out
