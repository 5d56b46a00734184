"""Forecasting question answering over temporal knowledge graphs.

The pipeline: ingest event logs into a temporal KG, train complex-valued
embeddings and a window-constrained forecaster, generate entity-prediction /
yes-unknown / fact-reasoning questions, train per-family QA scoring heads,
and evaluate with ranking and accuracy metrics. A multi-hop score
propagator is available as an explicitly-flagged non-forecasting diagnostic.
"""

__version__ = "0.1.0"
