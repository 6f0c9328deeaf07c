from .Report import SCHEMA_VERSION, Report

__all__ = ["Report", "SCHEMA_VERSION"]
