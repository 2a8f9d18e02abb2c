# Readers compare major/minor (see mfoc.get_format_schema_int) to decide whether they can load a run directory
MANIFEST_SCHEMA_VERSION = "0.1.0"
