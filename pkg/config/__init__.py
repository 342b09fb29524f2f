"""Configuration package for the crisis multimodal classifier"""
