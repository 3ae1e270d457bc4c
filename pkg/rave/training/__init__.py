"""Base training and quantization-aware fine-tuning."""
