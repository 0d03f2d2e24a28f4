"""Test package for blayer_verify"""
