# Empty __init__.py to make packages discoverable