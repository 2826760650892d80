/* Imports two quantum-vulnerable APIs; only the lexicographically later
 * one (qv_rsa_sign) is reachable from main. Pins candidate iteration
 * order in trace search. */
int qv_rsa_sign(const void *msg, int len, void *sig);
int qv_dh_derive(const void *peer, void *secret);

int stale_derive(void)
{
    char secret[32];
    return qv_dh_derive("stale-peer", secret);
}

static __attribute__((noinline)) int sign_payload(void)
{
    char sig[32];
    return qv_rsa_sign("corpus-two", 10, sig);
}

int main(void)
{
    return sign_payload();
}
