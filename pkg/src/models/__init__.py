"""Parameter sets, text/image fusion, datasets and the training loop"""
