"""
Presets package for qotp
Contains YAML noise models calibrated to the field deployment
"""
