"""Figure rendering for the experiment CSV artifacts.

Talks to the experiment pipelines only through their CSV files; no shared
code beyond the file formats.
"""

__version__ = "0.1.0"
