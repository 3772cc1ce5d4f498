"""Mobility indicators from call detail records, stratified by housing-price socioeconomic status."""

__version__ = "0.1.0"
