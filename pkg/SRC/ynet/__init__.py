# Y-Net model module
