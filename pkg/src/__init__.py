"""Core package for depth foundation model pretraining, distillation and evaluation."""
