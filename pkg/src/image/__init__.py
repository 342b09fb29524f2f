"""Image loading, preprocessing and the VGG16 branch"""
