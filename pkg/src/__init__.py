"""bop-forge: block oriented programming compiler.

CLI usage:
    bop-forge compile --payload execve --target fixtures/targets/T1.tir
"""
