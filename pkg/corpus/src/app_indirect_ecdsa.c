int mid_ecdsa_sign(const void *msg, int len, void *sig);

static __attribute__((noinline)) int sign_with_ecdsa(void)
{
    char sig[32];
    return mid_ecdsa_sign("corpus-ecdsa", 12, sig);
}

int main(void)
{
    return sign_with_ecdsa();
}
