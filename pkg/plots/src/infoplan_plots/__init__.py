from .curves import CurveTable, SchemaError, load_curve, render_curve, render_table

__all__ = ["CurveTable", "SchemaError", "load_curve", "render_curve", "render_table"]
