"""Characterization harness: campaigns, backends and the ``vanguard`` CLI."""
