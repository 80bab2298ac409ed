"""Storage layer: silos, connector descriptors, the audited proxy and tokens."""

from .audit import AuditEntry, AuditTrail, AuditVerdict, verify_audit
from .connector import ConnectorDescriptor, create_connector, verify_connector
from .errors import InvalidInputError, NotFoundError, TokenIntegrityError, TokenRevokedError
from .proxy import (
    AccessPolicy,
    ConnectorHandler,
    DatabaseProxy,
    ProxyRequest,
    ProxyResponse,
    proxy_read,
    proxy_write,
)
from .silo import HFQ, LFQ, DataSilo
from .tokens import TokenRecord, redeem_token, tokenize_connector
