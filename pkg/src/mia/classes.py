from enum import IntEnum


class SemanticClass(IntEnum):
    """Static BEV classes. The ordinal is the raster plane / PNG bit index."""

    ROAD = 0
    PARKING = 1
    SIDEWALK = 2
    CROSSING = 3
    BUILDING = 4
    TERRAIN = 5

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def from_label(cls, label: str) -> "SemanticClass":
        return cls[label.upper()]


NUM_CLASSES = len(SemanticClass)
CLASS_NAMES = tuple(c.label for c in SemanticClass)
