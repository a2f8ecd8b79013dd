import os

from dotenv import load_dotenv
from fastapi import HTTPException, Security, status
from fastapi.security import APIKeyHeader
from slowapi import Limiter
from slowapi.util import get_remote_address

load_dotenv()

# API Key Configuration; an empty key leaves the prediction endpoint open
API_KEY = os.getenv("CLIPVQA_API_KEY", "")
API_KEY_NAME = "X-API-Key"

# Rate Limiting
limiter = Limiter(key_func=get_remote_address)

api_key_header = APIKeyHeader(
    name=API_KEY_NAME,
    auto_error=False,
    description="API Key for the prediction endpoint.",
)


async def verify_api_key(api_key: str = Security(api_key_header)):
    """Validate the API key header when a key is configured."""
    if not API_KEY:
        return None

    if not api_key:
        raise HTTPException(
            status_code=status.HTTP_401_UNAUTHORIZED,
            detail="API Key required",
        )

    if api_key != API_KEY:
        raise HTTPException(
            status_code=status.HTTP_403_FORBIDDEN, detail="Invalid API Key"
        )

    return api_key
