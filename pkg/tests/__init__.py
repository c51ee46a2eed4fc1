"""Test suite for Ouroboros - Ring of Eternity"""
