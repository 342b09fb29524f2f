"""Confusion matrices, weighted metrics, batched inference and report files"""
