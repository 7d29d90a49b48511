"""Input construction for frame-and-subtitle video LLM prompts.

Frame budgeting, visual-token condensation and projection, LoRA adapters,
subtitle parsing/alignment, interleaved sequence assembly and an
LLM-as-judge evaluation harness.
"""

__version__ = "0.1.0"
