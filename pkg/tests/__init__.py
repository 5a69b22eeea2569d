"""
Test suite for the OTA-DSGD simulator.
"""
