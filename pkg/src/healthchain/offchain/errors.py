class NotFoundError(KeyError):
    pass


class InvalidInputError(ValueError):
    pass


class TokenIntegrityError(Exception):
    """Decryption worked but the recovered descriptor or the token is not authentic."""


class TokenRevokedError(Exception):
    pass
