# Y-Net segmentation and deep clustering source code
