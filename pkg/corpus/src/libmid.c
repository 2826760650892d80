/* Mid-layer wrapper library: one thin wrapper per toycrypto primitive.
 * Built at -O2 so the wrappers compile to tail jumps into the PLT. */

int qv_rsa_sign(const void *msg, int len, void *sig);
int qv_ecdsa_sign(const void *msg, int len, void *sig);
int qv_dh_derive(const void *peer, void *secret);
int safe_sha512(const void *msg, int len, void *digest);
int safe_aes256(const void *key, const void *in, void *out);

int mid_rsa_sign(const void *msg, int len, void *sig)
{
    return qv_rsa_sign(msg, len, sig);
}

int mid_ecdsa_sign(const void *msg, int len, void *sig)
{
    return qv_ecdsa_sign(msg, len, sig);
}

int mid_dh_derive(const void *peer, void *secret)
{
    return qv_dh_derive(peer, secret);
}

int mid_sha512(const void *msg, int len, void *digest)
{
    return safe_sha512(msg, len, digest);
}

int mid_aes256(const void *key, const void *in, void *out)
{
    return safe_aes256(key, in, out);
}
