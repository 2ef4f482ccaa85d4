import hashlib
import os
import uuid

# Root directory for certificates; RECIPART_CERT_DIR overrides it
CERT_DIR = os.environ.get("RECIPART_CERT_DIR", "certificates")


def cert_dir():
    """
    Returns the certificate root, re-reading RECIPART_CERT_DIR so a changed
    environment takes effect without a reload.
    """
    return os.environ.get("RECIPART_CERT_DIR", CERT_DIR)


def save_text(path, text):
    """
    Writes text to path atomically: the content goes to a uniquely named
    temp file in the same directory, which then replaces the target.
    Returns the path.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)

    # Unique temp name so concurrent writers never share a temp file
    temp_path = os.path.join(directory, f".{uuid.uuid4().hex}.tmp")
    try:
        with open(temp_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(temp_path, path)
    finally:
        if os.path.exists(temp_path):
            os.remove(temp_path)
    return path


def read_text(path):
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
