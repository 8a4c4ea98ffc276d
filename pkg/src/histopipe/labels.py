"""BRACS 7-class label taxonomy and lesion-group mapping."""

from __future__ import annotations

from enum import Enum


class ClassLabel(str, Enum):
    """One of the seven BRACS tumour subtypes."""

    N = "N"
    PB = "PB"
    UDH = "UDH"
    FEA = "FEA"
    ADH = "ADH"
    DCIS = "DCIS"
    IC = "IC"

    @property
    def lesion_group(self) -> str:
        return LESION_GROUPS[self]

    @property
    def index(self) -> int:
        return CLASS_ORDER.index(self)


# Canonical class order used everywhere a class axis appears
# (confusion matrices, soft labels, reports).
CLASS_ORDER: tuple[ClassLabel, ...] = (
    ClassLabel.N,
    ClassLabel.PB,
    ClassLabel.UDH,
    ClassLabel.FEA,
    ClassLabel.ADH,
    ClassLabel.DCIS,
    ClassLabel.IC,
)

NUM_CLASSES = len(CLASS_ORDER)

LESION_GROUPS: dict[ClassLabel, str] = {
    ClassLabel.N: "benign",
    ClassLabel.PB: "benign",
    ClassLabel.UDH: "benign",
    ClassLabel.FEA: "atypical",
    ClassLabel.ADH: "atypical",
    ClassLabel.DCIS: "malignant",
    ClassLabel.IC: "malignant",
}


def parse_label(text: str) -> ClassLabel:
    """Parse a class code, tolerating case and the BRACS ``0_N`` folder prefix."""
    name = text.strip()
    if "_" in name and name.split("_", 1)[0].isdigit():
        name = name.split("_", 1)[1]
    try:
        return ClassLabel(name.upper())
    except ValueError:
        valid = ", ".join(c.value for c in CLASS_ORDER)
        raise ValueError(f"unknown class label {text!r} (valid codes: {valid})") from None
