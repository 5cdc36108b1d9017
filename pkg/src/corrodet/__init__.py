"""corrodet: tile-based corrosion detection for metal-surface imagery.

Pipeline stages: synthetic surface generation -> tiling -> grouped splits ->
residual tile classifier -> count-threshold image rule -> metrics -> operator
review service.
"""

__version__ = "0.1.0"
