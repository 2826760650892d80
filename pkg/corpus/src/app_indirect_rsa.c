int mid_rsa_sign(const void *msg, int len, void *sig);

static __attribute__((noinline)) int sign_with_rsa(void)
{
    char sig[32];
    return mid_rsa_sign("corpus-rsa", 10, sig);
}

int main(void)
{
    return sign_with_rsa();
}
