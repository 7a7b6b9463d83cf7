# Engine core - one sub-package per concern
