"""Min-sum message passing for separable convex programs."""
from .errors import (
    ConvergenceError,
    DegenerateCurvatureError,
    DimensionError,
    DominanceRefused,
    MinSumError,
    ProblemFormatError,
    ScheduleError,
)
from .model import Program, load_program, loads_program, save_program

__all__ = [
    "ConvergenceError",
    "DegenerateCurvatureError",
    "DimensionError",
    "DominanceRefused",
    "MinSumError",
    "ProblemFormatError",
    "Program",
    "ScheduleError",
    "load_program",
    "loads_program",
    "save_program",
]
__version__ = "0.1.0"
