"""soilnet: a desk-scale soil-monitoring sensor network.

Simulated motes, radios, and collection protocols feeding a real ingestion
pipeline with timestamp reconstruction and quality control, operated
through a CLI and a small HTTP service.
"""

__version__ = "0.1.0"
