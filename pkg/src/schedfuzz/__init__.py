"""Coverage-guided fuzzing of distributed-system event schedules."""

__version__ = "0.1.0"
