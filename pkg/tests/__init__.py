"""
Test suite for the noisy mixture-of-experts estimators and command line
"""
