# Clustering module
