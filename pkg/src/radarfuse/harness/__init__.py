"""Formats, configuration, training and the command line."""
