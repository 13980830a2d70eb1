"""数値実験ライブラリ"""
