"""videotutor: programming-video transcripts → apprenticeship tutoring sessions."""

__version__ = "0.1.0"
