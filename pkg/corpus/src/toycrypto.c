/* Stand-in crypto library. Only the exported symbol surface matters to the
 * scanner; bodies are inert arithmetic so the corpus needs no libc. */

int qv_rsa_sign(const void *msg, int len, void *sig)
{
    const unsigned char *m = msg;
    unsigned char *s = sig;
    s[0] = (unsigned char)(m[0] ^ 0x52);
    return len + 1;
}

int qv_ecdsa_sign(const void *msg, int len, void *sig)
{
    const unsigned char *m = msg;
    unsigned char *s = sig;
    s[0] = (unsigned char)(m[0] ^ 0x45);
    return len + 2;
}

int qv_dh_derive(const void *peer, void *secret)
{
    const unsigned char *p = peer;
    unsigned char *s = secret;
    s[0] = (unsigned char)(p[0] ^ 0x44);
    return 3;
}

int safe_sha512(const void *msg, int len, void *digest)
{
    const unsigned char *m = msg;
    unsigned char *d = digest;
    d[0] = (unsigned char)(m[0] + 0x53);
    return len + 4;
}

int safe_aes256(const void *key, const void *in, void *out)
{
    const unsigned char *k = key;
    const unsigned char *i = in;
    unsigned char *o = out;
    o[0] = (unsigned char)(k[0] ^ i[0]);
    return 5;
}
