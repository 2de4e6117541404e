"""Test initialization file for test package"""
