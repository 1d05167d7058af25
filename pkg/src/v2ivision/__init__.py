"""Vision-aided V2I channel prediction: synthetic sounding, label extraction,
mask rendering, dataset assembly and a compact CNN regressor."""

__version__ = "0.1.0"
