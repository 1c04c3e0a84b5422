"""Process-aware enactment of clinical guidelines.

Guideline documents parse into executable task networks; the engine runs
them per patient case with temporal constraints and role-addressed work
items, exchanges orders and results with an EMR over HL7 v2, and records
every transition in an append-only event log that can rebuild any case.
"""

__version__ = "0.1.0"
