"""Annotation ingest, label agreement, category merging and split generation"""
