"""Test cases for the ahm_ood package."""
