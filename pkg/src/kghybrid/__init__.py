"""Two-step hybrid policies for knowledge-graph cooking games.

A learned pruner picks the action type; a selector built from mined
supporting edges picks the concrete action and explains the choice.
"""
__version__ = "0.1.0"
