"""Image textualization engine: holistic captioning, hallucination detection,
fine-grained object annotation and LLM recaptioning behind pluggable backends."""

__version__ = "0.1.0"
