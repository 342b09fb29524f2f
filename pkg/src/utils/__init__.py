"""Logging, error types and run summaries"""
