"""Checkpoint persistence"""
