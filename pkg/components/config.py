#!/usr/bin/env python3
"""
Configuration Module

This module provides centralized configuration management for the transfer-summarization engine.
It handles environment variable loading and provides a single source of truth for process-level settings.
Run-level settings (thresholds, datasets, provider choice) live in the run config file, see
components/engine/run_config.py.

Key Components:
- Centralized environment variable loading
- Credential validation per provider backend
- Default value management for output and asset directories

Usage:
    from components.config import config
    config.validate_provider_config('anthropic')
    out_dir = config.OUTPUT_DIR
"""

import os
from dotenv import load_dotenv

# Load environment variables from the project root
# This assumes the .env file is in the project root directory
load_dotenv()

_PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


class Config:
    """Centralized configuration class"""

    # Provider credentials (one per live backend)
    OPENAI_API_KEY = os.getenv('OPENAI_API_KEY')
    OPENAI_BASE_URL = os.getenv('OPENAI_BASE_URL', 'https://api.openai.com/v1')
    ANTHROPIC_API_KEY = os.getenv('ANTHROPIC_API_KEY')
    ANTHROPIC_BASE_URL = os.getenv('ANTHROPIC_BASE_URL', 'https://api.anthropic.com/v1')
    ANTHROPIC_VERSION = os.getenv('ANTHROPIC_VERSION', '2023-06-01')
    GEMINI_API_KEY = os.getenv('GEMINI_API_KEY') or os.getenv('GOOGLE_API_KEY')
    GEMINI_BASE_URL = os.getenv('GEMINI_BASE_URL', 'https://generativelanguage.googleapis.com/v1beta')

    # Application Configuration
    OUTPUT_DIR = os.getenv('OUTPUT_DIR', 'runs')
    PROMPTS_DIR = os.getenv('PROMPTS_DIR', os.path.join(_PROJECT_ROOT, 'assets', 'prompts'))
    EXPERIENCES_DIR = os.getenv('EXPERIENCES_DIR', os.path.join(_PROJECT_ROOT, 'assets', 'experiences'))
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')

    # Throughput
    RATE_LIMIT_RPM = int(os.getenv('RATE_LIMIT_RPM', '60'))
    MAX_WORKERS = int(os.getenv('MAX_WORKERS', '4'))
    HTTP_TIMEOUT_S = float(os.getenv('HTTP_TIMEOUT_S', '120'))

    # Prompts ask the model to stay under this many words per experience store
    EXPERIENCE_WORD_CAP = 600

    _CREDENTIAL_VARS = {
        'openai_compatible': ['OPENAI_API_KEY'],
        'anthropic': ['ANTHROPIC_API_KEY'],
        'gemini': ['GEMINI_API_KEY'],
        'replay': [],
    }

    @classmethod
    def validate_provider_config(cls, backend):
        """Validate that the credentials for a live backend are present"""
        if backend not in cls._CREDENTIAL_VARS:
            raise ValueError(f"Unknown provider backend: {backend}")
        missing = [var for var in cls._CREDENTIAL_VARS[backend] if not getattr(cls, var)]
        if missing:
            raise ValueError(f"Missing {backend} environment variables: {', '.join(missing)}")

    @classmethod
    def credential_for(cls, backend):
        """Return the API key for a backend, or None for replay"""
        names = cls._CREDENTIAL_VARS.get(backend, [])
        return getattr(cls, names[0]) if names else None


# Create a global config instance
config = Config()
