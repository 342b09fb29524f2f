"""Tweet normalization, vocabulary and the text CNN branch"""
