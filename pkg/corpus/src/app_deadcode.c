/* Imports a quantum-vulnerable API but only from a function that main
 * never reaches: positive at the API-dependency tier, cleared by the
 * trace tier. */
int qv_rsa_sign(const void *msg, int len, void *sig);

int unreachable_sign(void)
{
    char sig[32];
    return qv_rsa_sign("never-run", 9, sig);
}

int main(void)
{
    return 0;
}
